"""Reference kernels that can either run plainly or tally their arithmetic.

Each kernel is written once against an ``ops`` backend.  ``NumpyOps`` just
computes; ``CountingOps`` computes the same thing and adds the number of
elementwise multiplications and additions it performed to a running tally.
Counting therefore reflects the work actually executed (zero-padded borders
included) rather than a formula.
"""

from __future__ import annotations

import numpy as np

from .layers import Conv2DDescriptor, OpCount, Padding, output_shape

# Output elements processed per inner step of the direct convolution.  Keeps
# the working set cache-sized so per-FLOP cost does not depend on layer shape.
BLOCK_ELEMS = 1 << 15


class NumpyOps:
    """Uninstrumented backend used for timing."""

    def mul(self, a, b):
        return np.multiply(a, b)

    def add(self, a, b):
        return np.add(a, b)

    def mac(self, acc, a, b):
        """``acc += a * b`` in place."""
        acc += a * b

    def add_(self, acc, b):
        acc += b

    def matmul(self, a, b):
        return np.matmul(a, b)


class CountingOps(NumpyOps):
    """Backend that tallies every elementwise multiply and add."""

    def __init__(self):
        self.multiplications = 0
        self.additions = 0

    @property
    def count(self) -> OpCount:
        return OpCount(self.multiplications, self.additions)

    def mul(self, a, b):
        out = np.multiply(a, b)
        self.multiplications += np.size(out)
        return out

    def add(self, a, b):
        out = np.add(a, b)
        self.additions += np.size(out)
        return out

    def mac(self, acc, a, b):
        prod = np.multiply(a, b)
        self.multiplications += prod.size
        acc += prod
        self.additions += acc.size

    def add_(self, acc, b):
        acc += b
        self.additions += acc.size

    def matmul(self, a, b):
        # Rank-1 updates so every multiply-accumulate goes through ``mac``.
        acc = np.zeros((a.shape[0], b.shape[1]), dtype=np.result_type(a, b))
        for p in range(a.shape[1]):
            self.mac(acc, a[:, p : p + 1], b[p : p + 1, :])
        return acc


def dot(x, y, ops):
    """Inner product; the accumulator starts from the first product."""
    acc = ops.mul(x[0], y[0])
    for i in range(1, len(x)):
        acc = ops.add(acc, ops.mul(x[i], y[i]))
    return acc


def gemm(a, b, c, ops, alpha=None, beta=None):
    """``alpha * a @ b + beta * c``; a ``None`` scalar means the term is absent."""
    acc = np.zeros((a.shape[0], b.shape[1]), dtype=np.result_type(a, b))
    for p in range(a.shape[1]):
        ops.mac(acc, a[:, p : p + 1], b[p : p + 1, :])
    if alpha is not None:
        acc = ops.mul(alpha, acc)
    if beta is not None:
        acc = ops.add(acc, ops.mul(beta, c))
    return acc


def matvec_bias(weight, x, bias, ops):
    """Dense layer: ``weight @ x + bias`` with ``weight`` of shape (d_out, d_in)."""
    acc = np.zeros(weight.shape[0], dtype=np.result_type(weight, x))
    for p in range(weight.shape[1]):
        ops.mac(acc, weight[:, p], x[p])
    if bias is not None:
        ops.add_(acc, bias)
    return acc


def pad_input(x, desc: Conv2DDescriptor):
    """Zero-pad ``x`` (batch, c_in, h, w) as required by ``desc``'s padding mode."""
    if desc.padding is Padding.VALID:
        return x
    w_out, h_out = output_shape(desc)
    pad_w = max((w_out - 1) * desc.stride + desc.k1 - desc.w_in, 0)
    pad_h = max((h_out - 1) * desc.stride + desc.k2 - desc.h_in, 0)
    if pad_w == 0 and pad_h == 0:
        return x
    return np.pad(
        x,
        ((0, 0), (0, 0), (pad_h // 2, pad_h - pad_h // 2), (pad_w // 2, pad_w - pad_w // 2)),
    )


def _window(xp, b, ci, i, j, r0, rows, w_out, stride):
    r_start = r0 * stride + i
    return xp[
        b,
        ci,
        r_start : r_start + (rows - 1) * stride + 1 : stride,
        j : j + (w_out - 1) * stride + 1 : stride,
    ]


def conv_direct(x, weight, desc: Conv2DDescriptor, ops):
    """Direct convolution by sliding-window accumulation.

    ``x`` is (batch, c_in, h_in, w_in), ``weight`` is (c_out, c_in, k2, k1);
    returns (batch, c_out, h_out, w_out).  Output rows are processed in
    blocks of roughly ``BLOCK_ELEMS`` elements.
    """
    w_out, h_out = output_shape(desc)
    xp = pad_input(x, desc)
    out = np.empty((desc.batch, desc.c_out, h_out, w_out), dtype=np.result_type(x, weight))
    rows_per_block = max(1, BLOCK_ELEMS // (desc.c_out * w_out))
    for b in range(desc.batch):
        for r0 in range(0, h_out, rows_per_block):
            rows = min(rows_per_block, h_out - r0)
            acc = np.zeros((desc.c_out, rows, w_out), dtype=out.dtype)
            for ci in range(desc.c_in):
                for i in range(desc.k2):
                    for j in range(desc.k1):
                        window = _window(xp, b, ci, i, j, r0, rows, w_out, desc.stride)
                        ops.mac(acc, weight[:, ci, i, j][:, None, None], window[None])
            out[b, :, r0 : r0 + rows, :] = acc
    return out


def im2col(xp, b, desc: Conv2DDescriptor):
    """Unroll one padded image into a (h_out * w_out, k2 * k1 * c_in) patch matrix."""
    w_out, h_out = output_shape(desc)
    cols = np.empty((h_out, w_out, desc.k2, desc.k1, desc.c_in), dtype=xp.dtype)
    for i in range(desc.k2):
        for j in range(desc.k1):
            patch = xp[
                b,
                :,
                i : i + (h_out - 1) * desc.stride + 1 : desc.stride,
                j : j + (w_out - 1) * desc.stride + 1 : desc.stride,
            ]
            cols[:, :, i, j, :] = np.moveaxis(patch, 0, -1)
    return cols.reshape(h_out * w_out, desc.k2 * desc.k1 * desc.c_in)


def conv_im2col(x, weight, desc: Conv2DDescriptor, ops):
    """Convolution lowered to one GEMM per image; same layouts as ``conv_direct``."""
    w_out, h_out = output_shape(desc)
    xp = pad_input(x, desc)
    # rows ordered (i, j, ci) to match the patch matrix columns
    wmat = np.ascontiguousarray(weight.transpose(2, 3, 1, 0)).reshape(-1, desc.c_out)
    out = np.empty((desc.batch, desc.c_out, h_out, w_out), dtype=np.result_type(x, weight))
    for b in range(desc.batch):
        prod = ops.matmul(im2col(xp, b, desc), wmat)
        out[b] = prod.T.reshape(desc.c_out, h_out, w_out)
    return out
