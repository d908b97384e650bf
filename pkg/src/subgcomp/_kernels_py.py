"""Pure numpy/Python versions of the compiled kernels."""
import numpy as np

_CHUNK = 4096


def _position_sums(block, seqs):
    # left-to-right over positions, matching the compiled loop bit for bit
    acc = block[:, 0, seqs[:, 0]].copy()
    for i in range(1, seqs.shape[1]):
        acc += block[:, i, seqs[:, i]]
    return acc


def tensor_values(copies, seqs):
    copies = np.asarray(copies, dtype=float)
    seqs = np.asarray(seqs, dtype=np.intp)
    R, M, _ = copies.shape
    out = np.empty((R, seqs.shape[0]))
    for lo in range(0, R, _CHUNK):
        out[lo:lo + _CHUNK] = _position_sums(copies[lo:lo + _CHUNK], seqs) / M
    return out


def tensor_sup(copies, seqs):
    copies = np.asarray(copies, dtype=float)
    seqs = np.asarray(seqs, dtype=np.intp)
    R, M, _ = copies.shape
    out = np.empty(R)
    step = max(1, _CHUNK * 64 // max(1, seqs.shape[0]))
    for lo in range(0, R, step):
        out[lo:lo + step] = _position_sums(copies[lo:lo + step], seqs).max(axis=1) / M
    return out


def min_cover(masks, n, upper):
    masks = [int(m) for m in masks]
    maxsize = max(1, max(bin(m).count("1") for m in masks))
    best = [upper + 1]

    def search(uncovered, depth):
        if uncovered == 0:
            best[0] = min(best[0], depth)
            return
        need = -(-bin(uncovered).count("1") // maxsize)
        if depth + need >= best[0]:
            return
        e = (uncovered & -uncovered).bit_length() - 1
        for m in masks:
            if (m >> e) & 1:
                search(uncovered & ~m, depth + 1)

    search((1 << n) - 1, 0)
    return best[0]
