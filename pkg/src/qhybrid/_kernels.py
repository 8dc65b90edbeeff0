"""Compiled in-place gate kernels over (batch, 2**n) amplitude arrays.

A program is an int64 array of (opcode, wire0, wire1) rows plus one angle
per op and per batch row.  Running a whole program on one row keeps the
``2**n`` amplitudes hot in cache, which matters far more than the gate
arithmetic once n reaches ~10.  Single-qubit ops walk the index pairs
``(j, j + stride)`` block by block with ``stride = 2**(n-1-q)``.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _insert_zero(i, stride):
    lo = i & (stride - 1)
    return ((i - lo) << 1) | lo


OP_H, OP_X, OP_RX, OP_RY, OP_RZ, OP_CNOT, OP_CRZ = 0, 1, 2, 3, 4, 5, 6

_S = 0.7071067811865476


@njit(cache=True, nogil=True)
def _op_row(row, n, code, w0, w1, angle):
    dim = row.shape[0]
    if code == OP_CNOT or code == OP_CRZ:
        cbit = 1 << (n - 1 - w0)
        tbit = 1 << (n - 1 - w1)
        lo_bit = min(cbit, tbit)
        hi_bit = max(cbit, tbit)
        if code == OP_CRZ:
            p0 = np.exp(-0.5j * angle)
            p1 = np.exp(0.5j * angle)
        for i in range(dim >> 2):
            i0 = _insert_zero(_insert_zero(i, lo_bit), hi_bit) | cbit
            i1 = i0 | tbit
            if code == OP_CRZ:
                row[i0] *= p0
                row[i1] *= p1
            else:
                tmp = row[i0]
                row[i0] = row[i1]
                row[i1] = tmp
        return
    stride = 1 << (n - 1 - w0)
    if code == OP_RZ:
        p0 = np.exp(-0.5j * angle)
        p1 = np.exp(0.5j * angle)
        for blk in range(0, dim, 2 * stride):
            for j in range(blk, blk + stride):
                row[j] *= p0
                row[j + stride] *= p1
    elif code == OP_RY:
        c = np.cos(0.5 * angle)
        s = np.sin(0.5 * angle)
        for blk in range(0, dim, 2 * stride):
            for j in range(blk, blk + stride):
                a0 = row[j]
                a1 = row[j + stride]
                row[j] = complex(c * a0.real - s * a1.real, c * a0.imag - s * a1.imag)
                row[j + stride] = complex(s * a0.real + c * a1.real, s * a0.imag + c * a1.imag)
    elif code == OP_RX:
        c = np.cos(0.5 * angle)
        s = np.sin(0.5 * angle)
        for blk in range(0, dim, 2 * stride):
            for j in range(blk, blk + stride):
                a0 = row[j]
                a1 = row[j + stride]
                # c*a0 - i s*a1 and -i s*a0 + c*a1
                row[j] = complex(c * a0.real + s * a1.imag, c * a0.imag - s * a1.real)
                row[j + stride] = complex(s * a0.imag + c * a1.real, -s * a0.real + c * a1.imag)
    elif code == OP_H:
        for blk in range(0, dim, 2 * stride):
            for j in range(blk, blk + stride):
                a0 = row[j]
                a1 = row[j + stride]
                row[j] = (a0 + a1) * _S
                row[j + stride] = (a0 - a1) * _S
    elif code == OP_X:
        for blk in range(0, dim, 2 * stride):
            for j in range(blk, blk + stride):
                tmp = row[j]
                row[j] = row[j + stride]
                row[j + stride] = tmp


@njit(cache=True, nogil=True)
def _zexp_row(row, signs, out):
    for q in range(signs.shape[1]):
        out[q] = 0.0
    for i in range(row.shape[0]):
        a = row[i]
        p = a.real * a.real + a.imag * a.imag
        for q in range(signs.shape[1]):
            out[q] += p * signs[i, q]


@njit(cache=True, nogil=True)
def run_program(amps, n, ops, angles, start):
    """Apply ops[start:] to every row of ``amps`` in place."""
    for b in range(amps.shape[0]):
        row = amps[b]
        for g in range(start, ops.shape[0]):
            _op_row(row, n, ops[g, 0], ops[g, 1], ops[g, 2], angles[b, g])


@njit(cache=True, nogil=True)
def program_jacobian(n, ops, angles, param_of_op, signs, shifts2, coeffs2, shifts4, coeffs4,
                     values, jac):
    """Forward readout and parameter-shift Jacobian, one row at a time.

    ``param_of_op[g]`` is the theta index fed to op ``g`` or -1.  CRZ ops use
    the four-term rule, every other trainable op the two-term rule.
    """
    dim = 1 << n
    state = np.empty(dim, dtype=np.complex128)
    scratch = np.empty(dim, dtype=np.complex128)
    z = np.empty(n)
    num_ops = ops.shape[0]
    for b in range(angles.shape[0]):
        state[:] = 0.0
        state[0] = 1.0
        for g in range(num_ops):
            p = param_of_op[g]
            if p >= 0:
                if ops[g, 0] == OP_CRZ:
                    shifts = shifts4
                    coeffs = coeffs4
                else:
                    shifts = shifts2
                    coeffs = coeffs2
                for k in range(shifts.shape[0]):
                    scratch[:] = state
                    _op_row(scratch, n, ops[g, 0], ops[g, 1], ops[g, 2], angles[b, g] + shifts[k])
                    for h in range(g + 1, num_ops):
                        _op_row(scratch, n, ops[h, 0], ops[h, 1], ops[h, 2], angles[b, h])
                    _zexp_row(scratch, signs, z)
                    for q in range(n):
                        jac[b, q, p] += coeffs[k] * z[q]
            _op_row(state, n, ops[g, 0], ops[g, 1], ops[g, 2], angles[b, g])
        _zexp_row(state, signs, z)
        for q in range(n):
            values[b, q] = z[q]


@njit(cache=True, nogil=True)
def jacobi_sweep(a, v, rounds_p, rounds_q):
    """One Jacobi sweep over every (p, q) plane in tournament order, in place.

    ``a`` is symmetric; both triangles are kept up to date.  Returns the
    number of rotations applied.
    """
    m = a.shape[0]
    applied = 0
    for r in range(rounds_p.shape[0]):
        for k in range(rounds_p.shape[1]):
            p = rounds_p[r, k]
            q = rounds_q[r, k]
            apq = a[p, q]
            if abs(apq) < 1e-300:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            if theta == 0.0:
                t = 1.0
            else:
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            for i in range(m):
                aip = a[i, p]
                aiq = a[i, q]
                a[i, p] = c * aip - s * aiq
                a[i, q] = s * aip + c * aiq
            for j in range(m):
                apj = a[p, j]
                aqj = a[q, j]
                a[p, j] = c * apj - s * aqj
                a[q, j] = s * apj + c * aqj
            for i in range(m):
                vip = v[i, p]
                viq = v[i, q]
                v[i, p] = c * vip - s * viq
                v[i, q] = s * vip + c * viq
            applied += 1
    return applied
