"""Pure numpy versions of the compiled kernels (same signatures, write into ``out``)."""

import numpy as np


def gru_combine(z, h, c, out):
    np.add((1 - z) * h, z * c, out=out)


def gru_combine_backward(g, z, h, c, dz, dh, dc):
    np.multiply(g, c - h, out=dz)
    np.multiply(g, 1 - z, out=dh)
    np.multiply(g, z, out=dc)


def aggregate(msgs, adj, out):
    out[...] = 0
    for src in range(msgs.shape[1]):
        out += adj[:, :, src, None] * msgs[:, None, src, :]


def aggregate_backward(g, adj, out):
    out[...] = 0
    for dst in range(g.shape[1]):
        out += adj[:, dst, :, None] * g[:, None, dst, :]


def normalize_rows(v, eps, out, norms):
    norms[...] = np.sqrt(np.einsum("ij,ij->i", v, v))
    den = np.maximum(norms, eps)
    np.divide(v, den[:, None], out=out)


def normalize_rows_backward(g, out, norms, eps, dv):
    live = norms > eps
    dot = np.einsum("ij,ij->i", g, out)
    den = np.where(live, norms, eps)
    proj = np.where(live, dot, 0)
    np.divide(g - proj[:, None] * out, den[:, None], out=dv)
